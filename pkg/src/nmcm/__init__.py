"""Collision-model simulator for non-Markovian open quantum dynamics."""
