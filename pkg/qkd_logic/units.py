####################################
#     Units : dB / dBm             #
####################################

# Every 10^(x/10) in the package goes through here.

import numpy as np


def dbm_to_mw(power_dbm):
    """Optical power in dBm -> mW (scalar or array)"""
    return np.power(10.0, np.asarray(power_dbm, dtype=float) / 10.0)


def loss_to_transmission(loss_db):
    """Attenuation in dB -> linear transmission factor in (0, 1]"""
    return np.power(10.0, -np.asarray(loss_db, dtype=float) / 10.0)


def ratio_to_db(ratio):
    return 10.0 * np.log10(np.asarray(ratio, dtype=float))
