import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scaloforge.features import StftConfig
from scaloforge.filterbank import WaveletScaleParams

# stock feature configuration: 48 kHz stereo, 512/171 ms framing
STOCK_PARAMS = WaveletScaleParams(f_h=24000.0, f_l=0.5, T_max=0.341, Q=35)

# small configuration for the time-domain oracle runs (8 kHz)
DESK_RATE = 8000
DESK_PARAMS = WaveletScaleParams(f_h=3900.0, f_l=0.5, T_max=0.256, Q=8)
DESK_STFT = StftConfig(window=0.512, shift=0.080, fft_size=4096)


@pytest.fixture
def stock_params():
    return STOCK_PARAMS


@pytest.fixture
def desk_params():
    return DESK_PARAMS


@pytest.fixture
def desk_stft():
    return DESK_STFT
