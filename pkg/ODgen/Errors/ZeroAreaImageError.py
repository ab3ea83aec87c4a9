class ZeroAreaImageError(Exception):
    def __init__(self, width, height):
        self.width = width
        self.height = height

    def __str__(self):
        return 'Error while preparing the image plane:\n\nimage of size {}x{} has no pixels'.format(self.width, self.height)
