from battbee import (config, consts, detect, errors, identify, ingest, main,
                     model, pwl, report, simulate, spm, utils)

from .main import cli
