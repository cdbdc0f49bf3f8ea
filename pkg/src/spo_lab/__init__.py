"""Simple Policy Optimization and PPO-Clip from first principles."""
from .objectives import ObjectiveKind, f_ppo, f_ppo_grad, f_simple, f_spo, f_spo_grad

__version__ = "0.1.0"
