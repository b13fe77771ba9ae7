"""Glen's flow law for ice, regularized at vanishing strain rate."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class GlenRheology:
    """Power-law rheology ``eta = 1/2 A^(-1/n) (|eps|^2/2 + delta_reg)^((1-n)/(2n))``.

    ``A`` is the (nondimensional) rate factor, ``n`` the flow exponent and
    ``delta_reg`` a floor added to the strain-rate invariant so the viscosity
    stays finite for n > 1 at zero strain rate.
    """

    A: float = 0.5
    n: float = 1.0
    delta_reg: float = 1e-10

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigError(f"rate factor A must be positive, got {self.A}")
        if not self.n >= 1:
            raise ConfigError(f"flow exponent n must be >= 1, got {self.n}")
        if not self.delta_reg >= 0:
            raise ConfigError(f"delta_reg must be >= 0, got {self.delta_reg}")

    @property
    def prefactor(self):
        return 0.5 * self.A ** (-1.0 / self.n)

    @property
    def exponent(self):
        return (1.0 - self.n) / (2.0 * self.n)

    def _invariant(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="raise", invalid="raise"):
            try:
                return 0.5 * s * s + self.delta_reg
            except FloatingPointError as exc:
                raise NumericError("strain-rate invariant overflowed") from exc

    def viscosity(self, s):
        """Effective viscosity as a function of the Frobenius norm ``s = |eps(u)|``."""
        if self.n == 1:
            return np.full(np.shape(s), self.prefactor) if np.ndim(s) else self.prefactor
        return self.prefactor * self._invariant(s) ** self.exponent

    def viscosity_derivative(self, s):
        """Derivative of the viscosity with respect to ``s**2 / 2``."""
        if self.n == 1:
            return np.zeros(np.shape(s)) if np.ndim(s) else 0.0
        e = self.exponent
        return self.prefactor * e * self._invariant(s) ** (e - 1.0)

    def viscosity_from_invariant(self, half_s2):
        """Viscosity and its derivative given ``|eps|^2 / 2`` directly (assembly hot path)."""
        if self.n == 1:
            eta = np.full(np.shape(half_s2), self.prefactor)
            return eta, np.zeros_like(eta)
        e = self.exponent
        base = np.asarray(half_s2) + self.delta_reg
        pw = base ** (e - 1.0)
        eta = self.prefactor * pw * base
        deta = self.prefactor * e * pw
        return eta, deta


def viscosity(rheo, s):
    return rheo.viscosity(s)


def viscosity_derivative(rheo, s):
    return rheo.viscosity_derivative(s)
