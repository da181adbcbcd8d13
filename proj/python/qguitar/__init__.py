"""Quantum guitar engine: one qubit, steered by pedals, sonified across a guitar's strings."""
from ._qguitar import *  # noqa: F401,F403
from ._qguitar import __doc__  # noqa: F401
