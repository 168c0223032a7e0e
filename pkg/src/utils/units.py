"""
Unit conversions used by the configuration layer
"""

import numpy as np

def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)

def linear_to_db(value):
    return 10.0 * np.log10(np.asarray(value, dtype=float))

def dbm_to_watt(value_dbm):
    """dBm -> W, i.e. 10^((x - 30)/10)"""
    return 10.0 ** ((np.asarray(value_dbm, dtype=float) - 30.0) / 10.0)

def dbsm_to_m2(value_dbsm):
    """Radar cross section in dBsm -> m^2"""
    return db_to_linear(value_dbsm)

def kmh_to_ms(speed_kmh):
    return np.asarray(speed_kmh, dtype=float) / 3.6
