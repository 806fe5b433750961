import numpy as np

from tensor.errors import ShapeError
from tensor.tensor import Function


class BilinearSample(Function):
    """
    Échantillonnage bilinéaire d'une image (C,H,W) aux positions (2,H',W').

    Les coordonnées hors de l'image sont ramenées au bord (clamping); le
    gradient par rapport aux coordonnées est nul dans ces zones.
    """

    def forward(self, image, coords):
        if image.ndim != 3 or coords.ndim != 3 or coords.shape[0] != 2:
            raise ShapeError(f"bilinear_sample attend (C,H,W) et (2,H',W'), reçu {image.shape} et {coords.shape}")
        c, h, w = image.shape
        x = np.clip(coords[0], 0.0, w - 1.0)
        y = np.clip(coords[1], 0.0, h - 1.0)
        self.inside_x = (coords[0] >= 0.0) & (coords[0] <= w - 1.0)
        self.inside_y = (coords[1] >= 0.0) & (coords[1] <= h - 1.0)

        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        wx = x - x0
        wy = y - y0

        self.image_shape = image.shape
        self.idx = (x0, x1, y0, y1)
        self.wx, self.wy = wx, wy
        self.v00 = image[:, y0, x0]
        self.v01 = image[:, y0, x1]
        self.v10 = image[:, y1, x0]
        self.v11 = image[:, y1, x1]
        return ((1 - wx) * (1 - wy) * self.v00 + wx * (1 - wy) * self.v01
                + (1 - wx) * wy * self.v10 + wx * wy * self.v11)

    def backward(self, grad):
        x0, x1, y0, y1 = self.idx
        wx, wy = self.wx, self.wy
        c, h, w = self.image_shape

        d_image = np.zeros(c * h * w)
        channel_offset = (np.arange(c) * h * w)[:, None, None]
        for weight, yy, xx in (((1 - wx) * (1 - wy), y0, x0), (wx * (1 - wy), y0, x1),
                               ((1 - wx) * wy, y1, x0), (wx * wy, y1, x1)):
            flat = (channel_offset + yy * w + xx).ravel()
            d_image += np.bincount(flat, weights=(grad * weight).ravel(), minlength=c * h * w)

        d_x = ((1 - wy) * (self.v01 - self.v00) + wy * (self.v11 - self.v10))
        d_y = ((1 - wx) * (self.v10 - self.v00) + wx * (self.v11 - self.v01))
        d_coords = np.stack([
            (grad * d_x).sum(axis=0) * self.inside_x,
            (grad * d_y).sum(axis=0) * self.inside_y,
        ])
        return d_image.reshape(self.image_shape), d_coords


def bilinear_sample(image, coords):
    """
    Interpole `image` aux coordonnées pixel `coords` (canal 0 = x, canal 1 = y).

    Args:
        image (Tensor): image source (C,H,W)
        coords (Tensor): positions (2,H',W'), éventuellement hors de l'image

    Returns:
        Tensor: valeurs échantillonnées (C,H',W')
    """
    return BilinearSample.apply(image, coords)
