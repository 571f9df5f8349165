"""Numerical verification engine for quasi-Einstein and near-horizon geometry identities."""
