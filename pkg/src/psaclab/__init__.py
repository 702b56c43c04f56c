"""Path-sensitive atomic commit (PSAC) lab: entity specs, PSAC objects, 2PC,
a deterministic cluster simulator, history checkers and benchmark tooling."""

__version__ = "0.1.0"
