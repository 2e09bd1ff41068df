"""Spectral data of self-adjoint matrix Sturm-Liouville problems."""
