"""Hybrid physics + statistical energy prediction for battery-electric vehicle trips."""

__version__ = "0.1.0"
