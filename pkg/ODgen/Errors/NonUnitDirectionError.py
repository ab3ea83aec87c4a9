class NonUnitDirectionError(Exception):
    def __init__(self, direction):
        self.direction = direction

    def __str__(self):
        return 'Error while constructing a view direction:\n\ndirection {} does not have unit length'.format(list(self.direction))
