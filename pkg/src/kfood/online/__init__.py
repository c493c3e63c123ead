from .simulate import Policy, SimulationResult, simulate

__all__ = ["Policy", "SimulationResult", "simulate"]
