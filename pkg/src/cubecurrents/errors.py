from __future__ import annotations


class ComplexError(ValueError):
    """Malformed complex, map or chain input."""


class AxiomViolation(Exception):
    """An axiom check failed; ``locator`` pins down where."""

    def __init__(self, axiom: str, locator: dict, message: str = ""):
        self.axiom = axiom
        self.locator = locator
        super().__init__(f"{axiom} violated at {locator}" + (f": {message}" if message else ""))


class GalleryOverflowError(OverflowError):
    """Maximal-gallery enumeration would exceed the configured ceiling."""


class CertificateError(Exception):
    """A computed certificate failed its bound; ``certificate`` holds measured values."""

    def __init__(self, message: str, certificate: dict | None = None):
        self.certificate = certificate or {}
        super().__init__(message)
