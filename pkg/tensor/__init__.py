from tensor.conv import conv2d, downsample2x, upsample2x
from tensor.errors import ContractError, DomainError, ShapeError
from tensor.gradcheck import grad_check
from tensor.ops import (
    clamp, concat, einsum, elementwise, matmul, pad, reduce, reshape,
    stack, take, transpose, where,
)
from tensor.sampling import bilinear_sample
from tensor.serialization import load_tensor, save_tensor
from tensor.tensor import GraphTape, Tensor, as_tensor, backward, no_grad, parameter
