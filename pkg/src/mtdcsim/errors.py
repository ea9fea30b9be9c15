"""Exception types shared across the simulator."""


class MtdcError(Exception):
    """Base class for all simulator errors."""


class TopologyError(MtdcError):
    """Network cannot be solved: singular system, missing ground path, bad wiring."""


class ChatteringError(MtdcError):
    """Switch/diode conduction fixpoint failed to settle within the iteration cap."""

    def __init__(self, element_ids, time):
        self.element_ids = tuple(element_ids)
        self.time = time
        super().__init__(
            f"conduction state chattering at t={time:.6e}s in elements: "
            + ", ".join(self.element_ids)
        )


class InvariantViolation(MtdcError):
    """A mechanical-switching or state-machine invariant was violated."""


class ConfigError(MtdcError):
    """Scenario or element configuration is invalid; message names the field."""


class InfeasibleScenarioError(MtdcError):
    """Steady-state power flow has no acceptable solution for the given setpoints."""


class NumericalDivergenceError(MtdcError):
    """Non-finite quantities encountered; the run is aborted."""


class StreamOrderError(MtdcError):
    """Detector fed samples with decreasing timestamps."""


class WiringError(MtdcError):
    """Detections from different lines were handed to one voter."""
