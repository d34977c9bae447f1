"""Protocol registry."""

from .params import ConfigError, ProtocolParams, abort_threshold, alpha_beta_min, param_calc

_REGISTRY = {
    "direct": ("base", "Direct"),
    "pi_p": ("pi_p", "PassiveMix"),
    "pi_a": ("pi_a", "ActiveMix"),
    "pi_n": ("pi_n", "BasicNetworkMix"),
    "pi_n_plus": ("pi_n", "ButterflyMix"),
}

PROTOCOLS = tuple(_REGISTRY)


def get_protocol(name: str, params: ProtocolParams):
    """Instantiate the protocol registered under ``name``; imports lazily."""
    import importlib

    if name not in _REGISTRY:
        raise ConfigError("protocol", f"unknown protocol {name!r}; choose from {', '.join(_REGISTRY)}")
    module, cls = _REGISTRY[name]
    mod = importlib.import_module(f"{__name__}.{module}")
    return getattr(mod, cls)(params)


__all__ = ["ConfigError", "ProtocolParams", "PROTOCOLS", "get_protocol", "abort_threshold",
           "alpha_beta_min", "param_calc"]
