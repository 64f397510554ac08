"""Reference L2-regularized logistic regression fit with scipy's L-BFGS-B."""

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit


def fit_predict(features: np.ndarray, labels: np.ndarray, l2_lambda: float) -> np.ndarray:
    """Predicted probabilities of the penalized MLE on standardized features.

    Objective: mean log loss + 0.5 * lambda * ||w||^2 with the bias
    unpenalized; features are standardized by their column mean and
    population standard deviation before fitting.
    """
    means = features.mean(axis=0)
    stds = features.std(axis=0)
    stds[stds == 0.0] = 1.0
    X = (features - means) / stds
    n, d = X.shape
    y = labels.astype(np.float64)

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        w, b = theta[:d], theta[d]
        z = X @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2_lambda * float(w @ w)
        residual = expit(z) - y
        grad_w = X.T @ residual / n + l2_lambda * w
        grad_b = float(residual.mean())
        return loss, np.append(grad_w, grad_b)

    result = minimize(
        objective,
        np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-16},
    )
    if not result.success and "CONVERGENCE" not in (result.message or "").upper():
        raise RuntimeError(f"reference fit did not converge: {result.message}")
    w, b = result.x[:d], result.x[d]
    return expit(X @ w + b)
