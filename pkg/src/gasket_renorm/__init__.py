"""Energy renormalization and diffusion exponents on the golden-ratio gasket."""

__version__ = "0.1.0"

from .network import FormV0  # noqa: E402
from .qfield import RHO, GoldenRational  # noqa: E402

__all__ = ["__version__", "FormV0", "GoldenRational", "RHO"]
