from geometry.camera import PinholeCamera, interpolate_camera, read_rig, write_rig
from geometry.flow import compose_flow, forward_backward_gap, rigid_flow, warp_image, warp_validity
from geometry.io import read_flo, read_pfm, write_flo, write_pfm
from geometry.projection import pixel_grid, project, unproject
