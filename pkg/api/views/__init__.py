from .analysis import MomentView, StabilityView

__all__ = ['MomentView', 'StabilityView']
