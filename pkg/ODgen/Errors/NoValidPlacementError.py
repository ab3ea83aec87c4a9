class NoValidPlacementError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return 'Error while placing the object:\n\n{}'.format(self.message)
