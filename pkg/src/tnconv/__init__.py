"""Verification and construction toolkit for polyconvex differential inclusions."""

__version__ = "0.1.0"
