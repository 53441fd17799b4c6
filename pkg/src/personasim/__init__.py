"""Personality-driven user-behaviour simulation for recommender evaluation."""

__version__ = "0.1.0"
