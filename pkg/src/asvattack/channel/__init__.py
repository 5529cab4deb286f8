from .presets import (
    LOUDSPEAKER,
    MICROPHONE,
    DevicePreset,
    device_grid,
    device_key,
    get_preset,
    load_presets,
    preset_registry,
)
from .rir import RoomSetup, direct_delay, generate_rir
from .simulate import apply_channel

__all__ = [
    "LOUDSPEAKER", "MICROPHONE", "DevicePreset", "RoomSetup", "apply_channel", "device_grid",
    "device_key", "direct_delay", "generate_rir", "get_preset", "load_presets", "preset_registry",
]
