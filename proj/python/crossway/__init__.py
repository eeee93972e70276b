from ._core import (
    Policy,
    Pose,
    Schedule,
    ScheduleKind,
    ToyEnvState,
    ToyTask,
    Vec2,
    coverage,
    ddim_step,
    ddpm_step,
    generate_demos,
    make_schedule,
    q_sample,
    render,
    sample_init,
    scripted_expert,
    subsample_steps,
    toy_step,
)

__all__ = [
    "Policy",
    "Pose",
    "Schedule",
    "ScheduleKind",
    "ToyEnvState",
    "ToyTask",
    "Vec2",
    "coverage",
    "ddim_step",
    "ddpm_step",
    "generate_demos",
    "make_schedule",
    "q_sample",
    "render",
    "sample_init",
    "scripted_expert",
    "subsample_steps",
    "toy_step",
]
