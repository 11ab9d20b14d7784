"""Discrete checks of relative isoperimetric inequalities by the ABP method:
normal cones of labelled point sets, mixed Neumann problems on meshes, the
normal-bundle map on submanifolds and a free-boundary log-Sobolev inequality."""

__version__ = "0.1.0"
