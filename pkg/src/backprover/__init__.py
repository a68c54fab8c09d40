"""Iterative backward proof generation for rule-based QA."""
