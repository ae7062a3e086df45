"""Exception types raised across fluxwarn.

Every error derives from :class:`FluxwarnError` (itself a ``ValueError``) so
callers can catch the whole family at the CLI boundary.
"""


class FluxwarnError(ValueError):
    pass


class MalformedLine(FluxwarnError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateCell(FluxwarnError):
    def __init__(self, time, segment):
        self.time = time
        self.segment = segment
        super().__init__(f"duplicate record for segment {segment!r} at {time}")


class EmptyInput(FluxwarnError):
    pass


class EmptySegment(FluxwarnError):
    def __init__(self, segment_id):
        self.segment_id = segment_id
        super().__init__(f"segment {segment_id!r} has no observed values")


class SegmentNotFound(FluxwarnError, KeyError):
    def __init__(self, segment_id):
        self.segment_id = segment_id
        ValueError.__init__(self, f"segment {segment_id!r} not found")

    __str__ = ValueError.__str__


class InsufficientHistory(FluxwarnError):
    pass


class DimensionMismatch(FluxwarnError):
    pass


class EmptyDataset(FluxwarnError):
    pass


class NoDaytimeData(FluxwarnError):
    pass


class InvalidScale(FluxwarnError):
    pass


class DegenerateSample(FluxwarnError):
    pass


class NonConvergence(FluxwarnError):
    def __init__(self, iterations: int, message: str = ""):
        self.iterations = iterations
        super().__init__(f"optimizer did not converge after {iterations} iterations {message}".strip())


class LengthMismatch(FluxwarnError):
    pass


class MisalignedStart(FluxwarnError):
    pass


class ConstantSeries(FluxwarnError):
    pass


class InsufficientOverlap(FluxwarnError):
    pass


class PartialDay(FluxwarnError):
    pass


class InvalidSpec(FluxwarnError):
    pass


class SchemaMismatch(FluxwarnError):
    pass
