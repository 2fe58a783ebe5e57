"""Numerical core: generators, models, probabilities, sampling and inference."""
