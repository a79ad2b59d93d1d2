from .metrics import entropy, luma, psnr, ssim, write_metrics_csv
from .patches import ImagePatch, bicubic_resize, load_png, quantize, save_png, tile, to_bytes
from .resample import cubic_kernel, resize_array, resize_matrix
