"""
Model Catalogue
Describes what each dynamics variant defines, which forces apply and how phi is normalised
"""

from typing import Any, Dict, List

from .models import ModelKind, PhiNormalization

# Per-model capabilities; consumed by validation, manifests and the /models endpoint
MODEL_PROFILES = {
    ModelKind.VM: {
        'description': 'Vicsek model: angular noise, self-inclusive circular mean, forward update',
        'noise_defined': True,
        'wall_forces': False,
        'speed_renormalized': True,
        'random_headings': True,
        'normalization': PhiNormalization.N_V0,
    },

    ModelKind.VM_DD: {
        'description': 'Vicsek model with the desired-direction transform applied after the noise',
        'noise_defined': True,
        'wall_forces': False,
        'speed_renormalized': True,
        'random_headings': True,
        'normalization': PhiNormalization.N_V0,
    },

    ModelKind.SFM: {
        'description': 'Social force model: desire, social and granular forces with walls, Euler sub-stepping',
        'noise_defined': False,
        'wall_forces': True,
        'speed_renormalized': False,
        'random_headings': False,
        'normalization': PhiNormalization.SPEED_SUM,
    },

    ModelKind.SFM_VM: {
        'description': 'Vicsek velocity plus social-force acceleration, renormalised to v0',
        'noise_defined': True,
        'wall_forces': True,
        'speed_renormalized': True,
        'random_headings': False,
        'normalization': PhiNormalization.N_V0,
    },
}


def get_model_profile(model: ModelKind) -> Dict[str, Any]:
    """Get the catalogue entry for a model"""
    return MODEL_PROFILES[ModelKind(model)]


def get_supported_models() -> List[str]:
    """Get list of supported model identifiers"""
    return [kind.value for kind in MODEL_PROFILES]


def phi_normalization(model: ModelKind) -> PhiNormalization:
    """Order-parameter denominator used for a model"""
    return get_model_profile(model)['normalization']
