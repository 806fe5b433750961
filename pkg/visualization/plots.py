import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

COMPONENT_COLORS = {
    'loc': 'steelblue',
    'smooth': 'gray',
    'warp': 'darkorange',
    'consist': 'purple',
    'render': 'seagreen',
    'total': 'black',
}

VARIANT_LABELS = {
    'full': 'Complet',
    'no_residual': 'Sans flot résiduel',
    'single_stage': 'Une étape',
    'no_warp_loss': 'Sans perte de déformation',
}


def _to_png():
    buf = io.BytesIO()
    plt.savefig(buf, format='png', bbox_inches='tight')
    plt.close()
    buf.seek(0)
    return buf.getvalue()


class PlotGenerator:
    @staticmethod
    def create_loss_curve_chart(data_processor, run_id=None):
        epochs = data_processor.epoch_losses(run_id)

        if epochs.empty:
            return None

        plt.figure(figsize=(10, 6))

        for run, frame in epochs.groupby(level=0):
            frame = frame.droplevel(0)
            for column in frame.columns:
                if frame[column].isna().all():
                    continue
                plt.plot(frame.index, frame[column], marker='o', linestyle='-' if column == 'total' else '--',
                         color=COMPONENT_COLORS.get(column, 'blue'), label=f"{run}: {column}")

        plt.yscale('log')
        plt.title('Pertes moyennes par époque')
        plt.xlabel('Époque')
        plt.ylabel('Perte (échelle log)')
        plt.grid(True, linestyle='--', alpha=0.7)
        plt.legend(fontsize=8)

        return _to_png()

    @staticmethod
    def create_ablation_bar_chart(table, metric='psnr'):
        if table is None or table.empty or metric not in table.columns:
            return None

        labels = [VARIANT_LABELS.get(v, v) for v in table['variant']]
        values = table[metric].to_numpy(dtype=np.float64)
        finite = np.where(np.isfinite(values), values, np.nan)

        plt.figure(figsize=(10, 6))
        bars = plt.bar(labels, np.nan_to_num(finite), color=['seagreen'] + ['salmon'] * (len(labels) - 1))

        for bar, value in zip(bars, values):
            height = bar.get_height()
            plt.text(bar.get_x() + bar.get_width() / 2., height, f'{value:.2f}', ha='center', va='bottom',
                     fontweight='bold')

        plt.title(f'Ablations: {metric.upper()} de l\'image intermédiaire')
        plt.ylabel(metric.upper())
        plt.grid(axis='y', linestyle='--', alpha=0.7)
        plt.xticks(rotation=15)

        return _to_png()

    @staticmethod
    def create_residual_histogram(metrics):
        if metrics is None or metrics.empty or 'residual_static' not in metrics.columns:
            return None

        plt.figure(figsize=(10, 6))
        plt.hist([metrics['residual_static'], metrics['residual_dynamic']], bins=20,
                 color=['skyblue', 'salmon'], label=['Pixels statiques', 'Pixels dynamiques'], edgecolor='black')
        plt.title('Amplitude moyenne du flot résiduel par caméra')
        plt.xlabel('|F_residual| moyen (px)')
        plt.ylabel('Nombre de caméras')
        plt.grid(True, linestyle='--', alpha=0.7)
        plt.legend()

        return _to_png()
