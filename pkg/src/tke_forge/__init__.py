"""tke_forge: turbulent kinetic energy from sonic-anemometer series, and
temperature-driven TKE regression with six from-scratch models."""

__version__ = "0.1.0"
