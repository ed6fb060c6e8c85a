"""Desk-scale EEG spelling: letter classification, a probabilistic
letter-noise channel, and curriculum-trained sentence denoising."""

__version__ = "0.1.0"
