"""Forward LST modeling and diffusion-based inverse generation of vegetation layouts."""

__version__ = "0.1.0"
