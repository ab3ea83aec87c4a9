class UnknownCategoryError(Exception):
    def __init__(self, category_id):
        self.category_id = category_id

    def __str__(self):
        return 'Error while evaluating detections:\n\ncategory {} does not appear among the ground truth categories'.format(self.category_id)
