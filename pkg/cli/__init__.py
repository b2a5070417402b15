# Пакетный интерфейс командной строки
