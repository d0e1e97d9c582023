"""Realized Laplace transform of volatility: estimator, deviation rate functions
and Monte Carlo checks of their large and moderate deviation limits."""

__version__ = "0.1.0"

from .estimator import ErltvCurve, erltv_curve, erltv_irregular, erltv_regular  # noqa: E402
from .market_model import (DriftSpec, JumpSpec, SamplingScheme, TimeChange,  # noqa: E402
                           VolatilityModel, irregular, laplace_curve, quantile_scheme, regular,
                           time_change)
from .rates import (QuadratureSettings, RateFunctionResult, bessel_oracle,  # noqa: E402
                    clt_covariance, lambda_derivs, lambda_partition, lambda_point,
                    legendre_rate, mdp_rate)
from .simulator import PathIncrements, simulate_increments  # noqa: E402

__all__ = [
    "DriftSpec", "ErltvCurve", "JumpSpec", "PathIncrements", "QuadratureSettings",
    "RateFunctionResult", "SamplingScheme", "TimeChange", "VolatilityModel", "bessel_oracle",
    "clt_covariance", "erltv_curve", "erltv_irregular", "erltv_regular", "irregular",
    "lambda_derivs", "lambda_partition", "lambda_point", "laplace_curve", "legendre_rate",
    "mdp_rate", "quantile_scheme", "regular", "simulate_increments", "time_change",
]
