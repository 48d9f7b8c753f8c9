"""Simulation of an MZI-mesh physical unclonable function with quantum readout.

Submodules:

* :mod:`mzipuf.photonic_core`  mesh unitaries, single- and multi-photon evolution
* :mod:`mzipuf.puf_device`     device instances, challenges and responses
* :mod:`mzipuf.enrollment`     enrolled CRP databases and their file format
* :mod:`mzipuf.metrics`        Hamming/Euclidean distance statistics
* :mod:`mzipuf.protocols`      readout authentication and message authentication
* :mod:`mzipuf.adversary`      attacks and their success rates
* :mod:`mzipuf.cli`            command-line experiment driver
"""

from .enrollment import EnrollmentDb, catalan, crp_capacity, enroll, load_db, save_db
from .errors import (
    ChannelClosedError,
    InvalidArgumentError,
    NotEnrolledError,
    ParseError,
    PufError,
    UnsupportedSizeError,
    UnsupportedVersionError,
)
from .photonic_core import MeshTopology, PhaseSettings, PureState, FockState, mesh_unitary, mzi_unitary
from .protocols import (
    HonestProver,
    VerificationPolicy,
    authenticate,
    classical_message_auth,
    quantum_message_auth,
)
from .puf_device import Challenge, PufDevice, ideal_device, new_device, random_challenges

__version__ = "0.1.0"
