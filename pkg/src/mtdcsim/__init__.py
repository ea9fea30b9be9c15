"""mtdcsim: electromagnetic-transient simulation of multi-terminal VSC-HVDC
grids with hybrid and assembly DC breaker models under DMR fault detection."""

__version__ = "0.1.0"

from .network import (
    Capacitor,
    CurrentSource,
    Diode,
    Element,
    IdealSwitch,
    Inductor,
    Resistor,
    SolverConfig,
    SolverState,
    TransientSolver,
    Varistor,
    VoltageSource,
    dc_operating_point,
    solve_step,
    stamp,
    varistor_current,
)

__all__ = [
    "Capacitor", "CurrentSource", "Diode", "Element", "IdealSwitch",
    "Inductor", "Resistor", "SolverConfig", "SolverState", "TransientSolver",
    "Varistor", "VoltageSource", "dc_operating_point", "solve_step", "stamp",
    "varistor_current", "__version__",
]
