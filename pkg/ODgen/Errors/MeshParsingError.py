class MeshParsingError(Exception):
    def __init__(self, error, source: str = None):
        self.error = error
        self.source = source

    @property
    def line(self):
        return self.error.get('line')

    def __str__(self):
        if 'unexpected' in self.error:
            text = 'Error while parsing the mesh on line {}:\n\n'.format(self.error['line'])
            if self.source is not None and self.error['line'] >= 1:
                line = self.source.split("\n")[self.error['line'] - 1]
                position = self.error['column'] - 1
                text += '{}\n{}\n\n'.format(line, " " * position + "^")
            return text + 'Unexpected "' + self.error['unexpected'] + \
                '", expected one of: \"' + "\", \"".join(sorted(self.error['expected'])) + '\"'
        return 'Error while parsing the mesh on line {}:\n\n{}'.format(self.error['line'], self.error['message'])
