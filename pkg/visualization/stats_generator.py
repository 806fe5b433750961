import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import hsv_to_rgb

from data_management.data_loader import load_ablation_table
from data_management.data_processor import DataProcessor
from visualization.plots import PlotGenerator


def flow_to_color(flow, max_magnitude=None):
    """
    Code couleur d'un flot (2,H,W): teinte = direction, saturation = amplitude.

    Returns:
        ndarray: image RGB (H,W,3) dans [0,1]
    """
    data = np.asarray(getattr(flow, "data", flow), dtype=np.float64)
    u, v = data[0], data[1]
    magnitude = np.sqrt(u ** 2 + v ** 2)
    scale = max_magnitude if max_magnitude else max(float(magnitude.max()), 1e-9)
    hue = (np.arctan2(-v, -u) / np.pi + 1.0) / 2.0
    saturation = np.clip(magnitude / scale, 0.0, 1.0)
    return hsv_to_rgb(np.stack([hue, saturation, np.ones_like(hue)], axis=-1))


def depth_to_color(depth, cmap="magma"):
    """Carte de couleurs (H,W,3) de la disparité normalisée d'une profondeur (1,H,W)."""
    data = np.asarray(getattr(depth, "data", depth), dtype=np.float64)
    data = data.reshape(data.shape[-2:])
    disparity = 1.0 / np.maximum(data, 1e-9)
    low, high = disparity.min(), disparity.max()
    normalized = (disparity - low) / (high - low) if high > low else np.zeros_like(disparity)
    return plt.get_cmap(cmap)(normalized)[..., :3]


class StatsGenerator:
    def __init__(self, run_dir=None, output_dir=None):
        self.data_processor = DataProcessor(run_dir)
        self.output_dir = output_dir or os.path.join("data", "stats")
        os.makedirs(self.output_dir, exist_ok=True)

    def _write(self, name, payload):
        if payload is None:
            return None
        output_file = os.path.join(self.output_dir, name)
        with open(output_file, 'wb') as f:
            f.write(payload)
        return output_file

    def generate_all_stats(self, ablation_file=None, metrics_file=None):
        stats_files = [self.generate_loss_curves()]
        if ablation_file:
            stats_files.append(self.generate_ablation_chart(ablation_file))
        if metrics_file:
            stats_files.append(self.generate_residual_histogram(metrics_file))

        return [f for f in stats_files if f]

    def generate_loss_curves(self, run_id=None):
        try:
            return self._write("loss_curves.png", PlotGenerator.create_loss_curve_chart(self.data_processor, run_id))
        except Exception as e:
            print(f"Erreur lors de la génération des courbes de perte: {e}")
            return None

    def generate_ablation_chart(self, ablation_file):
        try:
            table = load_ablation_table(ablation_file)
            return self._write("ablation_psnr.png", PlotGenerator.create_ablation_bar_chart(table))
        except Exception as e:
            print(f"Erreur lors de la génération du graphique d'ablation: {e}")
            return None

    def generate_residual_histogram(self, metrics_file):
        try:
            metrics = DataProcessor.load_metrics(metrics_file)
            return self._write("residual_flow.png", PlotGenerator.create_residual_histogram(metrics))
        except Exception as e:
            print(f"Erreur lors de la génération de l'histogramme des flots: {e}")
            return None

    def generate_flow_panels(self, result, prefix="flows"):
        """
        Une figure par caméra: flots rigide, total et résiduel (sens avant)
        à la même échelle de couleur, et profondeur prédite.
        """
        files = []
        try:
            for c in range(result.num_cameras):
                flows = [result.flow(kind, "fwd", c) for kind in ("rigid", "total", "residual")]
                scale = max(float(np.abs(f.data).max()) for f in flows) or 1.0

                fig, axes = plt.subplots(1, 4, figsize=(16, 3.5))
                for ax, flow, title in zip(axes, flows, ("Flot rigide", "Flot total", "Flot résiduel")):
                    ax.imshow(flow_to_color(flow, scale))
                    ax.set_title(title)
                axes[3].imshow(depth_to_color(result.depth_t[c]))
                axes[3].set_title("Profondeur (disparité)")
                for ax in axes:
                    ax.axis('off')

                output_file = os.path.join(self.output_dir, f"{prefix}_c{c}.png")
                fig.tight_layout()
                fig.savefig(output_file)
                plt.close(fig)
                files.append(output_file)
        except Exception as e:
            print(f"Erreur lors de la génération des cartes de flot: {e}")
        return files
