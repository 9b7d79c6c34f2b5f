"""Benchmark environments: gridworlds, cart-pole, navigation, Tetris and a regenerative chain."""

from .cartpole import CartPoleParams, CartPoleProblem, RbfFeatures, cartpole_policy, cartpole_step
from .gridworlds import build_hallway, build_mccallum, hallway_spec, mccallum_spec
from .navigation import NavigationParams, NavigationProblem, navigation_policy, navigation_step
from .synthetic import average_reward_oracle, regenerative_mdp
from .tetris import TetrisBoard, TetrisProblem, legal_placements, play_games, tetris_features, tetris_place

__all__ = [
    "CartPoleParams", "CartPoleProblem", "NavigationParams", "NavigationProblem", "RbfFeatures",
    "TetrisBoard", "TetrisProblem", "average_reward_oracle", "build_hallway", "build_mccallum",
    "cartpole_policy", "cartpole_step", "hallway_spec", "legal_placements", "mccallum_spec",
    "navigation_policy", "navigation_step", "play_games", "regenerative_mdp", "tetris_features",
    "tetris_place",
]
