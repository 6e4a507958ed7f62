"""Protocols, adversaries and trace analysis built on the utils execution model."""
