class AnnotationParsingError(Exception):
    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column

    def __str__(self):
        if self.line is None:
            return 'Error while reading the annotation file:\n\n{}'.format(self.message)
        return 'Error while reading the annotation file on line {}, column {}:\n\n{}'.format(self.line,
                                                                                          self.column,
                                                                                          self.message)
