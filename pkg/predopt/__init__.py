"""Predict-then-optimise scheduling of office activities and batteries against forecast net load."""
