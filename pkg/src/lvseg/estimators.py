"""scikit-learn style wrappers around the pipeline stages.

Each stage is an estimator with constructor-only hyperparameters, so
``get_params``/``set_params``/``clone`` work and stages compose with the
usual tooling. Stateless stages have a no-op ``fit``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import postproc, roi, volume
from .imgproc import PreprocessRecipe, preprocess_with_mask
from .types import ImageStack, RoiRect
from .unet import SegModel, TrainHyper, UNetConfig, augment, binarize, predict, seg_metrics, train
from .validation import check_images, check_masks, check_stacks


def preprocess_stack(stack: ImageStack, recipe: PreprocessRecipe) -> ImageStack:
    """Run ``recipe`` over every image (and mask) of a record."""
    data, masks, metas = [], [], []
    for s in range(stack.n_slices):
        d_row, m_row, meta_row = [], [], []
        for f in range(stack.n_frames):
            mask = None if stack.masks is None else stack.masks[s, f]
            img, m, meta = preprocess_with_mask(stack.data[s, f], stack.meta[s][f], recipe, mask)
            d_row.append(img)
            m_row.append(m)
            meta_row.append(meta)
        data.append(d_row)
        masks.append(m_row)
        metas.append(meta_row)
    out_masks = None if stack.masks is None else np.asarray(masks, dtype=np.uint8)
    return ImageStack(stack.patient_id, np.asarray(data, dtype=np.float32), metas, out_masks)


def mask_stack(stack: ImageStack, rect: RoiRect) -> ImageStack:
    """Zero every pixel outside ``rect`` in all images; sizes are unchanged.

    Ground-truth masks are left as they are.
    """
    data = roi.apply_roi(stack.data, rect)
    return ImageStack(stack.patient_id, data, stack.meta, stack.masks)


class Preprocessor(TransformerMixin, BaseEstimator):
    """Baseline / Method 1 / Method 2 recipes applied to ImageStacks."""

    def __init__(self, method="m2t2", crop_size=176, clahe_clip=2.0, clahe_grid=(1, 1),
                 intensity_norm="minmax", target_spacing=1.0):
        self.method = method
        self.crop_size = crop_size
        self.clahe_clip = clahe_clip
        self.clahe_grid = clahe_grid
        self.intensity_norm = intensity_norm
        self.target_spacing = target_spacing

    def recipe(self) -> PreprocessRecipe:
        return PreprocessRecipe(self.method, self.crop_size, self.clahe_clip, self.clahe_grid,
                                self.intensity_norm, self.target_spacing)

    def fit(self, X, y=None):
        self.recipe_ = self.recipe()
        return self

    def transform(self, X):
        recipe = getattr(self, "recipe_", None) or self.recipe()
        return [preprocess_stack(st, recipe) for st in check_stacks(X)]


class RoiDetector(TransformerMixin, BaseEstimator):
    """Per-patient LV bounding box from the motion (first-harmonic) map."""

    def __init__(self, r_min=15, r_max=64, keep=30, expand_frac=0.10):
        self.r_min = r_min
        self.r_max = r_max
        self.keep = keep
        self.expand_frac = expand_frac

    def detect(self, stack: ImageStack) -> RoiRect:
        return roi.detect_roi(stack.data, self.r_min, self.r_max, self.keep, self.expand_frac)

    def fit(self, X, y=None):
        self.rects_ = {st.patient_id: self.detect(st) for st in check_stacks(X)}
        return self

    def transform(self, X):
        check_is_fitted(self, "rects_")
        out = []
        for st in check_stacks(X):
            rect = self.rects_.get(st.patient_id) or self.detect(st)
            out.append(mask_stack(st, rect))
        return out


class UNetSegmenter(BaseEstimator):
    """U-Net pixel classifier on ``[N][H][W]`` image batches."""

    def __init__(self, input_size=176, base_filters=64, conv_layers=23, dropout_rate=0.5,
                 batch_norm=False, loss="logdice", optimizer="adam", learning_rate=1e-4,
                 batch_size=4, epochs=100, augment_factor=0, threshold=0.5, dice_smooth=1.0,
                 seed=0):
        self.input_size = input_size
        self.base_filters = base_filters
        self.conv_layers = conv_layers
        self.dropout_rate = dropout_rate
        self.batch_norm = batch_norm
        self.loss = loss
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment_factor = augment_factor
        self.threshold = threshold
        self.dice_smooth = dice_smooth
        self.seed = seed

    def config(self) -> UNetConfig:
        return UNetConfig(self.input_size, self.base_filters, self.conv_layers,
                          self.dropout_rate, self.batch_norm, self.seed).validate()

    def hyper(self) -> TrainHyper:
        return TrainHyper(self.loss, self.optimizer, self.learning_rate, self.batch_size,
                          self.epochs, self.augment_factor, self.threshold,
                          self.dice_smooth).validate()

    def fit(self, X, y, eval_set=None, callback=None):
        """Train from scratch. ``eval_set=(X_val, y_val)`` feeds the history metrics."""
        x = check_images(X, self.input_size)
        y = check_masks(y, like=x)
        if self.augment_factor:
            pairs = augment(list(zip(x, y)), factor=self.augment_factor, seed=self.seed)
            x = np.asarray([p[0] for p in pairs], dtype=np.float32)
            y = np.asarray([p[1] for p in pairs], dtype=np.uint8)
        val = None
        if eval_set is not None:
            xv = check_images(eval_set[0], self.input_size, "X_val")
            val = (xv, check_masks(eval_set[1], like=xv, name="y_val"))
        model = SegModel.build(self.config())
        train(model, (x, y), val, self.hyper(), seed=self.seed, callback=callback)
        self.model_ = model
        self.history_ = model.history
        return self

    @classmethod
    def from_model(cls, model: SegModel, **params) -> "UNetSegmenter":
        c = model.config
        est = cls(input_size=c.input_size, base_filters=c.base_filters,
                  conv_layers=c.conv_layers, dropout_rate=c.dropout_rate,
                  batch_norm=c.batch_norm, seed=c.seed, **params)
        est.model_ = model
        est.history_ = model.history
        return est

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return predict(self.model_, check_images(X, self.input_size))

    def predict(self, X) -> np.ndarray:
        return binarize(self.predict_proba(X), self.threshold)

    def score(self, X, y) -> float:
        """Pooled Dice similarity on ``(X, y)``."""
        pred = self.predict(X)
        return seg_metrics(check_masks(y, like=pred), pred).dsc

    def segment_stack(self, stack: ImageStack) -> ImageStack:
        """Copy of ``stack`` whose masks are this model's predictions."""
        flat = stack.data.reshape((-1,) + stack.data.shape[2:])
        masks = self.predict(flat).reshape(stack.data.shape)
        return ImageStack(stack.patient_id, stack.data, stack.meta, masks)


class ContourFilter(TransformerMixin, BaseEstimator):
    """Drop spurious components from a patient's predicted masks."""

    def __init__(self, method="center", fraction=postproc.CENTER_FRACTION, connectivity=8):
        self.method = method
        self.fraction = fraction
        self.connectivity = connectivity

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = []
        for st in check_stacks(X, need_masks=True):
            masks = postproc.filter_record(st.masks, self.method, self.connectivity, self.fraction)
            out.append(ImageStack(st.patient_id, st.data, st.meta, masks))
        return out


class VolumeEstimator(BaseEstimator):
    """ESV/EDV/EF per patient from masked ImageStacks."""

    def __init__(self, mode="am", fallback=True):
        self.mode = mode
        self.fallback = fallback

    def fit(self, X=None, y=None):
        return self

    def estimate(self, stack: ImageStack, edv_stack: ImageStack | None = None):
        edv_masks = None if edv_stack is None else edv_stack.masks
        return volume.estimate_patient(stack, mode=self.mode, fallback=self.fallback,
                                       edv_masks=edv_masks)

    def predict(self, X, edv_X=None) -> np.ndarray:
        """``[n_patients, 3]`` array of (esv_ml, edv_ml, ef); results kept in ``results_``."""
        stacks = check_stacks(X, need_masks=True)
        edv = [None] * len(stacks) if edv_X is None else check_stacks(edv_X, need_masks=True)
        self.results_ = [self.estimate(s, e) for s, e in zip(stacks, edv)]
        return np.array([[r.esv_ml, r.edv_ml, np.nan if r.ef is None else r.ef]
                         for r in self.results_], dtype=float).reshape(-1, 3)
