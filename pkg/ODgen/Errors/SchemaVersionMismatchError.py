class SchemaVersionMismatchError(Exception):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected

    def __str__(self):
        return 'Error while reading a versioned document:\n\nschema version {} found, {} expected'.format(self.found, self.expected)
