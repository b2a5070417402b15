class ElectionError(Exception):
    """Базовая ошибка библиотеки"""


class ConfigError(ElectionError, ValueError):
    """Некорректная конфигурация запуска или параметры операции"""


class StateError(ElectionError, ValueError):
    """Состояние вне пространства состояний цепи (или вне E(h))"""


class CertificationError(ElectionError, ArithmeticError):
    """Не удалось гарантировать точность: хвост или квадратура вне допуска"""

    def __init__(self, message: str, bound: float = None):
        super().__init__(message)
        self.bound = bound
