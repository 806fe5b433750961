from gaussians.cloud import GaussianCloud, covariance, covariances, random_cloud, sh_channels
from gaussians.construction import fuse, max_scale, pixel_aligned_cloud, to_world
from gaussians.motion import displace_means
from gaussians.ply import load_ply, save_ply
