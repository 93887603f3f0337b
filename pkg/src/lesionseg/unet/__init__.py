from .descriptor import (
    DEEPER,
    PRESETS,
    SHALLOW,
    VANILLA,
    ArchDescriptor,
    format_millions,
    layer_inventory,
    param_count,
    peak_activation_bytes,
)
from .model import UNet, forward
from .ops import softmax_channels
from .weights import (
    WeightStore,
    init_weights,
    load_weights,
    read_weights_file,
    save_weights,
    write_weights_file,
    zero_weights,
)
