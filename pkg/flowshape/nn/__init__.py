"""Differentiable building blocks on torch: attention, modulation, sparse convolution, optimizer, checks"""

from .attention import MultiHeadAttention, attention
from .modulation import AdaLN, adaln_modulate, normalize, timestep_embedding
from .sparse_conv import SparseConv3d, SparseResNetEncoder, SparseVoxelGrid, sparse_conv3d_encode
from .optim import AdamState, CheckedAdam, adam_step
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import load_checkpoint, load_module, save_checkpoint, save_module
