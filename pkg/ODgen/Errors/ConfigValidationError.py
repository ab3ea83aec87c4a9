class ConfigValidationError(Exception):
    def __init__(self, field_path, message):
        self.field_path = field_path
        self.message = message

    def __str__(self):
        return 'Error while validating the configuration field "{}":\n\n{}'.format(self.field_path, self.message)
