"""Desk-scale embodied urban-navigation benchmark: synthetic cities,
implicit-need tasks, a stop/choice episode protocol, backtracking and memory
strategies, a metric suite, and a live-session HTTP service."""

__version__ = "0.1.0"
