class PmbenchError(Exception):
    pass


class SchemaError(PmbenchError):
    pass


class ParseError(PmbenchError):
    pass


class ArgumentError(PmbenchError):
    pass


class ConfigurationError(PmbenchError):
    pass


class SurrogateError(PmbenchError):
    pass
