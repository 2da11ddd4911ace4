__mf_promote_submodules__ = ["rabi"]
