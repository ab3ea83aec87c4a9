class LevelTooLargeError(Exception):
    def __init__(self, level, maximum):
        self.level = level
        self.maximum = maximum

    def __str__(self):
        return 'Error while subdividing the icosahedron:\n\nlevel {} exceeds the maximum {}'.format(self.level, self.maximum)
