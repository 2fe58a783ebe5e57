"""Test package for mmMCounter."""
