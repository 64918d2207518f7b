"""Exception hierarchy. Each family maps to a distinct CLI exit code."""


class EngineCtxError(Exception):
    exit_code = 1


class AudioError(EngineCtxError):
    exit_code = 3


class UnreadableAudioError(AudioError):
    pass


class UnsupportedEncodingError(AudioError):
    pass


class EmptyAudioError(AudioError):
    pass


class SilentClipError(AudioError):
    pass


class ClipTooShortError(AudioError):
    pass


class SplitError(AudioError):
    pass


class FeatureError(EngineCtxError):
    exit_code = 4


class LearnError(EngineCtxError):
    exit_code = 5


class ChainError(EngineCtxError):
    exit_code = 6


class ContextError(EngineCtxError):
    exit_code = 7


class NoUsableContextError(ContextError):
    pass


class RegistryError(EngineCtxError):
    exit_code = 8


class NoApplicableModelError(RegistryError):
    pass


class SynthError(EngineCtxError):
    exit_code = 9


class ConfigError(EngineCtxError):
    exit_code = 10
