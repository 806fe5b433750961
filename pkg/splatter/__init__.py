from splatter.config import RenderConfig
from splatter.image_io import read_png16, read_ppm, write_png16, write_ppm
from splatter.projection import ProjectedGaussian, ProjectedGaussians, eval_sh, project_gaussians
from splatter.rasterizer import RenderStats, append_render_stats, rasterize, rasterize_oracle, render
