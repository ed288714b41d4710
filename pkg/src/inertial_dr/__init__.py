"""Inertial Krasnosel'skii-Mann, Douglas-Rachford and primal-dual splitting solvers."""
__version__ = "0.1.0"
