class InvalidRangeError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return 'Error while checking a numeric range:\n\n{}'.format(self.message)
