from .gradcheck import GradCheckReport, grad_check
from .graph import INPUT, LAYER_KINDS, Graph, LayerSpec, SpecError
from .losses import charbonnier_loss, cross_entropy, l1_loss, l2_loss, loss, softmax
from .ops import (
    ShapeError,
    avg_pool2_backward,
    avg_pool2_forward,
    conv2d_backward,
    conv2d_forward,
    prelu_backward,
    prelu_forward,
    transposed_conv2d_backward,
    transposed_conv2d_forward,
)
from .optim import SGD, sgd_step
from .weights_io import WeightsFormatError, load_weights, save_weights
