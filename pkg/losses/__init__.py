from losses.geometric import consistency_loss, reprojection_loss, smoothness_loss
from losses.metrics import depth_metrics
from losses.objectives import render_loss, stage1_total, stage2_total, warp_loss
from losses.photometric import l1, l2, photometric_error, psnr, ssim, ssim_map
from losses.weights import LossWeights, PerceptualHook
