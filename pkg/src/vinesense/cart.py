"""From-scratch CART-style regression tree.

Binary splits chosen by maximal explained-deviance reduction (between-group
sum of squares) with an exhaustive threshold search; categorical predictors
use the classical mean-ordering reduction to an ordered scan, exact for the
squared-error criterion. Pruning is cost-complexity with k-fold
cross-validation (largest complexity within one standard error of the
minimum). Conventions: x <= threshold routes left, thresholds sit at
midpoints of consecutive sorted distinct values, ties in deviance reduction
break toward the smaller threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ValidationError


@dataclass
class TreeNode:
    n: int
    mean: float
    sd: float
    deviance: float
    # split description; leaves keep all of these as None
    var_index: int | None = None
    threshold: float | None = None
    categories: frozenset | None = None  # left-routed categories
    categories_right: frozenset | None = None  # seen categories routed right
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self):
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def subtree_deviance(self) -> float:
        return sum(leaf.deviance for leaf in self.leaves())


def _deviance(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean()) ** 2)) if y.size else 0.0


def best_split_numeric(x: np.ndarray, y: np.ndarray):
    """Best midpoint threshold by deviance reduction; (None, 0.0) when the
    predictor is constant or y is constant."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    if n < 2 or xs[0] == xs[-1]:
        return None, 0.0
    csum = np.cumsum(ys)
    csum2 = np.cumsum(ys**2)
    total_sum, total_sum2 = csum[-1], csum2[-1]
    parent = total_sum2 - total_sum**2 / n

    best_threshold, best_reduction = None, 0.0
    for i in range(n - 1):
        if xs[i] == xs[i + 1]:
            continue
        nl = i + 1
        nr = n - nl
        left_dev = csum2[i] - csum[i] ** 2 / nl
        right_dev = (total_sum2 - csum2[i]) - (total_sum - csum[i]) ** 2 / nr
        reduction = parent - left_dev - right_dev
        if reduction > best_reduction + 1e-12:
            best_reduction = reduction
            best_threshold = 0.5 * (xs[i] + xs[i + 1])
    return best_threshold, best_reduction


def best_split_categorical(x: np.ndarray, y: np.ndarray):
    """Best left-routed category subset via the mean-ordered scan."""
    cats = sorted(set(x.tolist()), key=lambda c: (float(y[x == c].mean()), str(c)))
    if len(cats) < 2:
        return None, 0.0
    n = y.size
    total_sum = float(y.sum())
    total_sum2 = float((y**2).sum())
    parent = total_sum2 - total_sum**2 / n

    best_subset, best_reduction = None, 0.0
    left_sum = left_sum2 = 0.0
    left_n = 0
    for cat in cats[:-1]:
        yc = y[x == cat]
        left_sum += float(yc.sum())
        left_sum2 += float((yc**2).sum())
        left_n += yc.size
        right_n = n - left_n
        left_dev = left_sum2 - left_sum**2 / left_n
        right_dev = (total_sum2 - left_sum2) - (total_sum - left_sum) ** 2 / right_n
        reduction = parent - left_dev - right_dev
        if reduction > best_reduction + 1e-12:
            best_reduction = reduction
            best_subset = frozenset(cats[: cats.index(cat) + 1])
    return best_subset, best_reduction


def best_split(x: np.ndarray, y: np.ndarray, categorical: bool):
    if categorical:
        return best_split_categorical(np.asarray(x, dtype=object), y)
    return best_split_numeric(np.asarray(x, dtype=float), y)


class DevianceTreeRegressor(BaseEstimator, RegressorMixin):
    """Binary regression tree grown by maximal explained-deviance splits.

    Parameters
    ----------
    min_split : smallest node size still considered for splitting.
    min_leaf : smallest admissible child size.
    cp : pre-pruning complexity; a split must reduce deviance by at least
        cp * deviance(root).
    cv_folds : folds of the pruning cross-validation (0 disables pruning).
    categorical_features : indices of predictors treated as categories.
    random_state : seed of the CV fold assignment.
    """

    def __init__(
        self,
        min_split: int = 6,
        min_leaf: int = 2,
        cp: float = 0.01,
        cv_folds: int = 10,
        categorical_features: tuple = (),
        random_state: int = 0,
    ):
        self.min_split = min_split
        self.min_leaf = min_leaf
        self.cp = cp
        self.cv_folds = cv_folds
        self.categorical_features = categorical_features
        self.random_state = random_state

    # -- growing ---------------------------------------------------------

    def _make_leaf(self, y: np.ndarray) -> TreeNode:
        return TreeNode(
            n=int(y.size),
            mean=float(y.mean()),
            sd=float(y.std()),
            deviance=_deviance(y),
        )

    def _grow(self, X: np.ndarray, y: np.ndarray, root_deviance: float) -> TreeNode:
        node = self._make_leaf(y)
        if y.size < self.min_split or node.deviance <= 0.0:
            return node

        best = (0.0, None, None, None)  # reduction, var, threshold, subset
        for j in range(X.shape[1]):
            categorical = j in self.categorical_features
            split, reduction = best_split(X[:, j], y, categorical)
            if split is None:
                continue
            threshold, subset = (None, split) if categorical else (split, None)
            if reduction > best[0] + 1e-12:
                best = (reduction, j, threshold, subset)
        reduction, j, threshold, subset = best
        if j is None or reduction < self.cp * root_deviance:
            return node

        if threshold is not None:
            mask = X[:, j].astype(float) <= threshold
        else:
            mask = np.array([v in subset for v in X[:, j]])
        if mask.sum() < self.min_leaf or (~mask).sum() < self.min_leaf:
            return node
        node.var_index = j
        node.threshold = threshold
        node.categories = subset
        if subset is not None:
            node.categories_right = frozenset(
                v for v in X[:, j] if v not in subset
            )
        node.left = self._grow(X[mask], y[mask], root_deviance)
        node.right = self._grow(X[~mask], y[~mask], root_deviance)
        return node

    def fit(self, X, y):
        X = np.asarray(X, dtype=object)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ValidationError("X must be 2-dimensional")
        if X.shape[0] != y.size:
            raise ValidationError("X and y lengths differ")
        if y.size < 1:
            raise ValidationError("empty dataset")
        if self.min_leaf < 1 or self.cp < 0:
            raise ValidationError("invalid growth parameters")
        root_dev = _deviance(y)
        self.tree_ = self._grow(X, y, root_dev if root_dev > 0 else 1.0)
        self.n_features_in_ = X.shape[1]
        if self.cv_folds and not self.tree_.is_leaf:
            self.tree_ = self._prune_cv(self.tree_, X, y, self.cv_folds)
        return self

    # -- cost-complexity pruning -----------------------------------------

    @staticmethod
    def _clone_tree(node: TreeNode) -> TreeNode:
        clone = TreeNode(
            n=node.n, mean=node.mean, sd=node.sd, deviance=node.deviance,
            var_index=node.var_index, threshold=node.threshold,
            categories=node.categories, categories_right=node.categories_right,
        )
        if not node.is_leaf:
            clone.left = DevianceTreeRegressor._clone_tree(node.left)
            clone.right = DevianceTreeRegressor._clone_tree(node.right)
        return clone

    @staticmethod
    def _weakest_link_alphas(tree: TreeNode) -> list[float]:
        """Breakpoints of the cost-complexity path (increasing)."""
        work = DevianceTreeRegressor._clone_tree(tree)
        alphas = []
        while not work.is_leaf:
            best_g, best_node = None, None
            stack = [work]
            while stack:
                node = stack.pop()
                if node.is_leaf:
                    continue
                n_leaves = len(node.leaves())
                g = (node.deviance - node.subtree_deviance()) / (n_leaves - 1)
                if best_g is None or g < best_g - 1e-12:
                    best_g, best_node = g, node
                stack.extend([node.left, node.right])
            alphas.append(best_g)
            best_node.left = best_node.right = None
            best_node.var_index = None
            best_node.threshold = None
            best_node.categories = None
        return alphas

    @staticmethod
    def _prune_at(tree: TreeNode, alpha: float) -> TreeNode:
        """Smallest optimal subtree for complexity ``alpha``."""
        pruned = DevianceTreeRegressor._clone_tree(tree)

        def collapse(node):
            if node.is_leaf:
                return
            collapse(node.left)
            collapse(node.right)
            n_leaves = len(node.leaves())
            g = (node.deviance - node.subtree_deviance()) / (n_leaves - 1)
            if g <= alpha + 1e-12:
                node.left = node.right = None
                node.var_index = None
                node.threshold = None
                node.categories = None

        collapse(pruned)
        return pruned

    def _prune_cv(self, tree: TreeNode, X, y, folds: int) -> TreeNode:
        n = y.size
        if folds > n:
            raise ValidationError(f"cv_folds {folds} > number of cases {n}")
        if folds < 2:
            raise ValidationError("cv_folds must be >= 2")
        alphas = self._weakest_link_alphas(tree)
        if not alphas:
            return tree
        # candidate alphas: 0, geometric midpoints, beyond-the-last
        candidates = [0.0]
        for a0, a1 in zip(alphas, alphas[1:]):
            candidates.append(float(np.sqrt(max(a0, 0.0) * max(a1, 0.0))))
        candidates.append(alphas[-1] * 1.01 + 1e-12)

        rng = np.random.default_rng(self.random_state)
        assignment = rng.permutation(n) % folds
        sq_errors = np.zeros((len(candidates), n))
        grower = DevianceTreeRegressor(
            min_split=self.min_split, min_leaf=self.min_leaf, cp=self.cp,
            cv_folds=0, categorical_features=self.categorical_features,
        )
        for k in range(folds):
            test = assignment == k
            if not test.any() or test.all():
                continue
            root_dev = _deviance(y[~test])
            fold_tree = grower._grow(
                X[~test], y[~test], root_dev if root_dev > 0 else 1.0
            )
            for ci, alpha in enumerate(candidates):
                sub = self._prune_at(fold_tree, alpha)
                preds = np.array(
                    [self._route(sub, row) for row in X[test]]
                )
                sq_errors[ci, test] = (preds - y[test]) ** 2

        cv_mean = sq_errors.mean(axis=1)
        cv_se = sq_errors.std(axis=1) / np.sqrt(n)
        best = int(np.argmin(cv_mean))
        # one-standard-error tie policy: the most complexity within 1 SE
        limit = cv_mean[best] + cv_se[best]
        chosen = best
        for ci in range(len(candidates)):
            if cv_mean[ci] <= limit and candidates[ci] > candidates[chosen]:
                chosen = ci
        self.cp_chosen_ = candidates[chosen]
        self.cv_error_path_ = list(zip(candidates, cv_mean.tolist()))
        return self._prune_at(tree, candidates[chosen])

    # -- prediction ------------------------------------------------------

    @staticmethod
    def _route(node: TreeNode, row) -> float:
        while not node.is_leaf:
            value = row[node.var_index]
            if node.threshold is not None:
                go_left = float(value) <= node.threshold
            elif value in node.categories:
                go_left = True
            elif node.categories_right and value in node.categories_right:
                go_left = False
            else:
                # unseen category: majority-side rule
                go_left = node.left.n >= node.right.n
            node = node.left if go_left else node.right
        return node.mean

    def predict(self, X):
        X = np.asarray(X, dtype=object)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return np.array([self._route(self.tree_, row) for row in X])

    # -- export ----------------------------------------------------------

    def to_dict(self) -> dict:
        def encode(node):
            if node.is_leaf:
                return {
                    "leaf": True,
                    "mean": node.mean,
                    "sd": node.sd,
                    "n": node.n,
                }
            out = {
                "leaf": False,
                "variable": int(node.var_index),
                "n": node.n,
                "left": encode(node.left),
                "right": encode(node.right),
            }
            if node.threshold is not None:
                out["threshold"] = node.threshold
            else:
                out["categories"] = sorted(map(str, node.categories))
            return out

        return {"tree": encode(self.tree_), "cp": getattr(self, "cp_chosen_", self.cp)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render_text(self, feature_names: list[str] | None = None) -> str:
        def name(j):
            return feature_names[j] if feature_names else f"x{j}"

        lines = []

        def walk(node, indent):
            pad = "  " * indent
            if node.is_leaf:
                lines.append(
                    f"{pad}leaf: mean={node.mean:.4g} sd={node.sd:.4g} n={node.n}"
                )
                return
            if node.threshold is not None:
                test = f"{name(node.var_index)} <= {node.threshold:.6g}"
            else:
                test = f"{name(node.var_index)} in {sorted(map(str, node.categories))}"
            lines.append(f"{pad}{test} (n={node.n})")
            walk(node.left, indent + 1)
            lines.append(f"{pad}else")
            walk(node.right, indent + 1)

        walk(self.tree_, 0)
        return "\n".join(lines)
