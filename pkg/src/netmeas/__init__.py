"""netmeas: uncertainty-aware analysis of networked measuring systems.

Subpackages are plain modules:

``uncertain``    uncertain values, distributions and seeded random streams
``calibration``  white-box sensor models and least-squares calibration
``lti``          second-order LTI sensor dynamics and deconvolution
``propagation``  LPU and Monte Carlo uncertainty propagation
``learning``     learning problems, ridge / tree / forest / centroid models
``features``     segmentation, feature extraction, selection, redundancy
``pipeline``     grey-box prediction pipelines and model selection
``sim``          synthetic multi-sensor benchmark generator
``cli``          command-line interface
"""

from .errors import ConfigurationError, NetmeasError
from .uncertain import RandomStream, UncertainScalar, UncertainVector

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "NetmeasError", "RandomStream", "UncertainScalar", "UncertainVector", "__version__"]
