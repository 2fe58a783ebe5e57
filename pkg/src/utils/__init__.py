"""Utility modules for logging, persistence, seeding and validation."""
