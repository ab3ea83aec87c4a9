class InvalidParamError(Exception):
    def __init__(self, name, value, requirement):
        self.name = name
        self.value = value
        self.requirement = requirement

    def __str__(self):
        return 'Error while checking parameters:\n\n{} = {!r} violates: {}'.format(self.name, self.value, self.requirement)
