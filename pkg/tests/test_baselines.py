#!/usr/bin/env python3
"""
Test Baselines
Logistic regression, SGD softmax, Gaussian Naive Bayes and random forest
"""
import numpy as np
import pytest

from ftl_nids.baselines import (
    GNBParams,
    LRParams,
    RFParams,
    SGDParams,
    fit_baseline,
    gini_impurity,
    predict_baseline,
)
from ftl_nids.errors import DimensionMismatchError, EmptyInputError, SingleClassError

from tests.conftest import make_dataset


@pytest.fixture
def two_gaussians():
    """Class 0 at x in {0, 2} (mean 1, var 1), class 1 at x in {10, 12} (mean 11, var 1)"""
    return make_dataset([[0.0], [2.0], [10.0], [12.0]], [0, 0, 1, 1])


class TestGini:
    def test_pure_node(self):
        assert gini_impurity([5, 0]) == 0.0

    def test_even_two_class_node(self):
        assert gini_impurity([3, 3]) == pytest.approx(0.5)

    def test_three_class_node(self):
        # 1 - (0.25 + 0.0625 + 0.0625)
        assert gini_impurity([2, 1, 1]) == pytest.approx(0.625)

    def test_empty_node(self):
        with pytest.raises(EmptyInputError):
            gini_impurity([0, 0])


class TestGaussianNaiveBayes:
    def test_fitted_moments(self, two_gaussians):
        model = fit_baseline('gnb', two_gaussians)
        np.testing.assert_allclose(model.means[:, 0], [1.0, 11.0])
        np.testing.assert_allclose(model.variances[:, 0], [1.0, 1.0])
        np.testing.assert_allclose(model.priors, [0.5, 0.5])

    def test_predicts_nearest_class(self, two_gaussians):
        model = fit_baseline('gnb', two_gaussians)
        assert predict_baseline(model, [[1.0], [11.0]]).tolist() == [0, 1]

    def test_midpoint_tie_goes_to_lower_class(self, two_gaussians):
        model = fit_baseline('gnb', two_gaussians)
        assert predict_baseline(model, [[6.0]]).tolist() == [0]

    def test_zero_variance_floored(self):
        data = make_dataset([[1.0, 0.0], [1.0, 1.0], [3.0, 2.0], [3.0, 5.0]], [0, 0, 1, 1])
        model = fit_baseline('gnb', data, GNBParams(var_floor=1e-6))
        assert model.variances[0, 0] == 1e-6
        assert np.all(np.isfinite(model.variances))


class TestRandomForest:
    def test_stump_finds_pure_split(self):
        data = make_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        model = fit_baseline('rf', data, RFParams(n_trees=1, max_depth=1, bootstrap=False))
        (tree,) = model.trees
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 1.5
        assert tree.counts[tree.left[0]] == [2, 0]
        assert tree.counts[tree.right[0]] == [0, 2]
        assert gini_impurity(tree.counts[tree.left[0]]) == 0.0

    def test_identical_trees_vote_like_one_tree(self):
        data = make_dataset([[0.0], [1.0], [2.0], [3.0], [4.0]], [0, 1, 0, 1, 1])
        params = RFParams(n_trees=7, max_depth=3, bootstrap=False)
        forest = fit_baseline('rf', data, params, seed=2)
        single = fit_baseline('rf', data, params.model_copy(update={'n_trees': 1}), seed=2)
        x = np.linspace(-1, 5, 13)[:, None]
        assert predict_baseline(forest, x).tolist() == predict_baseline(single, x).tolist()

    def test_same_seed_same_forest_across_worker_counts(self, three_class_dataset):
        serial = fit_baseline('rf', three_class_dataset, RFParams(n_trees=6, max_workers=1), seed=5)
        threaded = fit_baseline('rf', three_class_dataset, RFParams(n_trees=6, max_workers=3), seed=5)
        assert [t.to_dict() for t in serial.trees] == [t.to_dict() for t in threaded.trees]

    def test_fits_separable_data(self, separable_blobs):
        model = fit_baseline('rf', separable_blobs, RFParams(n_trees=5, bootstrap=False), seed=0)
        predicted = predict_baseline(model, separable_blobs.features)
        assert np.mean(predicted == separable_blobs.labels) == 1.0


class TestLinearModels:
    def test_logistic_regression_separates_blobs(self, separable_blobs):
        model = fit_baseline('lr', separable_blobs)
        predicted = predict_baseline(model, separable_blobs.features)
        assert np.mean(predicted == separable_blobs.labels) == 1.0

    def test_logistic_regression_loss_never_rises_at_small_rate(self, three_class_dataset):
        model = fit_baseline('lr', three_class_dataset, LRParams(learning_rate=0.01, epochs=200))
        trace = np.array(model.loss_trace)
        assert trace[0] == pytest.approx(np.log(3))
        assert np.all(np.diff(trace) <= 1e-12)

    def test_sgd_is_seeded(self, three_class_dataset):
        params = SGDParams(epochs=3, batch_size=10)
        a = fit_baseline('sgd', three_class_dataset, params, seed=1)
        b = fit_baseline('sgd', three_class_dataset, params, seed=1)
        np.testing.assert_array_equal(a.weight, b.weight)
        assert len(a.loss_trace) == 3

    def test_wrong_feature_count(self, separable_blobs):
        model = fit_baseline('lr', separable_blobs, LRParams(epochs=1))
        with pytest.raises(DimensionMismatchError):
            predict_baseline(model, np.zeros((2, 3)))


class TestFitBaseline:
    @pytest.mark.parametrize('kind', ['lr', 'gnb', 'sgd', 'rf'])
    def test_single_class_rejected(self, kind):
        data = make_dataset([[0.0], [1.0]], [1, 1], label_names=['a', 'b'])
        with pytest.raises(SingleClassError):
            fit_baseline(kind, data)

    def test_unknown_kind(self, separable_blobs):
        with pytest.raises(ValueError):
            fit_baseline('svm', separable_blobs)

    @pytest.mark.parametrize('kind', ['lr', 'gnb', 'sgd', 'rf'])
    def test_to_dict_names_the_kind(self, kind, three_class_dataset):
        model = fit_baseline(kind, three_class_dataset, seed=0)
        d = model.to_dict()
        assert d['kind'] == kind
        assert d['n_classes'] == 3
