class ShapeMismatchError(Exception):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found

    def __str__(self):
        return 'Error while evaluating the network:\n\nexpected input of shape {}, got {}'.format(self.expected, self.found)
