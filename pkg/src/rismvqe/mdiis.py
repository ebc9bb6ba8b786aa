"""Modified DIIS acceleration for integral-equation fixed points.

Works on flattened solution/residual vectors; the caller supplies the
fixed-point map.  After a damped-Picard warm-up the update is the standard
residual-subspace least-squares step with a damped residual correction.
"""

import numpy as np


class MDIIS:
    def __init__(self, subspace=10, damping=0.5):
        self.subspace = subspace
        self.damping = damping
        self.solutions = []
        self.residuals = []

    def reset(self):
        self.solutions.clear()
        self.residuals.clear()

    def push(self, solution, residual):
        self.solutions.append(solution.copy())
        self.residuals.append(residual.copy())
        if len(self.solutions) > self.subspace:
            self.solutions.pop(0)
            self.residuals.pop(0)

    def extrapolate(self):
        """Minimum-residual combination with coefficients summing to one."""
        n = len(self.solutions)
        if n == 1:
            return self.solutions[0] + self.damping * self.residuals[0]
        B = np.empty((n + 1, n + 1))
        B[:n, :n] = np.array(
            [[float(np.dot(ri, rj)) for rj in self.residuals] for ri in self.residuals])
        B[n, :n] = -1.0
        B[:n, n] = -1.0
        B[n, n] = 0.0
        rhs = np.zeros(n + 1)
        rhs[n] = -1.0
        try:
            coef = np.linalg.solve(B, rhs)[:n]
        except np.linalg.LinAlgError:
            self.solutions = self.solutions[-1:]
            self.residuals = self.residuals[-1:]
            return self.solutions[0] + self.damping * self.residuals[0]
        new = np.zeros_like(self.solutions[0])
        for c, s, r in zip(coef, self.solutions, self.residuals):
            new += c * (s + self.damping * r)
        return new
