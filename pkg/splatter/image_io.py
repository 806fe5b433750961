import numpy as np
import png

from tensor.tensor import Tensor


def _to_hwc(image):
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] not in (1, 3):
        raise ValueError(f"Image (3,H,W) ou (1,H,W) attendue, reçu {data.shape}")
    if data.shape[0] == 1:
        data = np.repeat(data, 3, axis=0)
    return np.clip(np.transpose(data, (1, 2, 0)), 0.0, 1.0)


def quantize(image, maxval):
    return np.round(_to_hwc(image) * maxval).astype(np.uint16 if maxval > 255 else np.uint8)


def write_ppm(image, filename):
    """Écrit une image dans [0,1] en PPM binaire (P6, maxval 255)."""
    pixels = quantize(image, 255)
    h, w, _ = pixels.shape
    with open(filename, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_ppm(filename):
    """Lit un PPM P6 (maxval 255) et renvoie un Tensor (3,H,W) dans [0,1]."""
    with open(filename, "rb") as f:
        content = f.read()
    tokens = []
    position = 0
    # En-tête: magic, largeur, hauteur, maxval séparés par des blancs (commentaires '#')
    while len(tokens) < 4:
        while content[position:position + 1].isspace():
            position += 1
        if content[position:position + 1] == b"#":
            position = content.index(b"\n", position) + 1
            continue
        start = position
        while not content[position:position + 1].isspace():
            position += 1
        tokens.append(content[start:position])
    position += 1
    if tokens[0] != b"P6":
        raise ValueError(f"PPM binaire P6 attendu, reçu {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"maxval {maxval} non supporté")
    pixels = np.frombuffer(content, dtype=np.uint8, count=w * h * 3, offset=position)
    return Tensor(pixels.reshape(h, w, 3).transpose(2, 0, 1) / 255.0)


def write_png16(image, filename):
    """Écrit une image dans [0,1] en PNG RGB 16 bits."""
    pixels = quantize(image, 65535)
    h, w, _ = pixels.shape
    writer = png.Writer(width=w, height=h, bitdepth=16, greyscale=False)
    with open(filename, "wb") as f:
        writer.write(f, pixels.reshape(h, w * 3).tolist())


def read_png16(filename):
    """Lit un PNG RGB 16 bits et renvoie un Tensor (3,H,W) dans [0,1]."""
    w, h, rows, info = png.Reader(filename=filename).asDirect()
    if info["bitdepth"] != 16 or info["planes"] != 3:
        raise ValueError(f"PNG RGB 16 bits attendu, reçu bitdepth={info['bitdepth']} planes={info['planes']}")
    pixels = np.array([list(row) for row in rows], dtype=np.float64).reshape(h, w, 3)
    return Tensor(pixels.transpose(2, 0, 1) / 65535.0)
